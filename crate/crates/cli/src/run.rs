//! Command implementations.

use std::path::{Path, PathBuf};

use riskgame::equilibrium::SolveOptions;
use riskgame::{
    build_coefficients, convergence_experiment, estimate_objective, existence_check,
    mean_field_solve, simulate, solve_game, validate_game, Config, Error, GameSolution, Measure,
    SimulationConfig, TypeDistribution,
};

use crate::output::{emit, sci12, Table};

/// Exit status contract: 0 success, 1 domain failure, 2 usage/parse failure.
pub fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 2,
        _ => 1,
    }
}

pub struct CommonArgs {
    pub config: Config,
    pub out: Option<PathBuf>,
    pub force: bool,
    pub emit_json: bool,
}

impl CommonArgs {
    fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            steps: self.config.numerics.steps,
            tol: self.config.numerics.tol,
            max_iter: self.config.numerics.max_iter,
            allow_soft: self.force,
        }
    }

    fn out_path(&self, default_name: &str) -> PathBuf {
        self.out
            .clone()
            .unwrap_or_else(|| PathBuf::from(default_name))
    }
}

/// Validity gate shared by the compute commands: hard failures abort, soft
/// failures abort unless forced (then they warn). Certificate outcomes are
/// reported as warnings and never block here; `check` is the strict auditor.
fn gate_and_solve(args: &CommonArgs) -> riskgame::Result<GameSolution> {
    let report = validate_game(&args.config.game, &args.config.market);
    if args.force {
        for check in report.soft_failures() {
            eprintln!(
                "warning: {} failed ({}); continuing under --force",
                check.name, check.detail
            );
        }
    }
    let sol = solve_game(
        &args.config.game,
        &args.config.market,
        &args.solve_options(),
    )?;
    for (idx, report) in sol.existence.iter().enumerate() {
        if !report.passed {
            eprintln!(
                "warning: existence certificate {idx} not established \
                 (horizon_ok={}, conditions=({}, {}), novikov_ok={}, t_max={}, U(T)={})",
                report.horizon_ok,
                report.condition_ok.0,
                report.condition_ok.1,
                report.novikov_ok,
                report.envelope.t_max,
                report.u_at_horizon,
            );
        }
    }
    Ok(sol)
}

/// `check`: run all validity checks and per-insurer existence certificates;
/// exit 0 only when every check passes.
pub fn cmd_check(args: &CommonArgs) -> riskgame::Result<u8> {
    let report = validate_game(&args.config.game, &args.config.market);
    let horizon = args.config.game.horizon_t;

    let mut all_ok = report.all_passed();
    let mut certificates = Vec::new();
    for (k, insurer) in args.config.game.insurers.iter().enumerate() {
        let coeffs = build_coefficients(insurer, &args.config.market);
        let cert = existence_check(&coeffs, insurer, &args.config.market, horizon);
        all_ok &= cert.passed;
        certificates.push((k, cert));
    }

    if args.emit_json {
        let certs_json: Vec<serde_json::Value> = certificates
            .iter()
            .map(|(k, c)| {
                let mut v = serde_json::to_value(c).unwrap();
                v["insurer"] = serde_json::json!(k + 1);
                v
            })
            .collect();
        let doc = serde_json::json!({
            "validity": serde_json::to_value(&report).unwrap(),
            "certificates": certs_json,
            "all_passed": all_ok,
        });
        println!("{}", serde_json::to_string_pretty(&doc).unwrap());
    } else {
        for check in &report.checks {
            println!(
                "check {:<14} {}  [{}]",
                check.name,
                if check.passed { "PASS" } else { "FAIL" },
                check.detail
            );
        }
        for (k, cert) in &certificates {
            println!(
                "certificate insurer {:<2} {}  [case={:?}, t_max={}, U(T)={}, \
                 condition=({}, {}), generator_sup={:.6}, novikov_ok={}]",
                k + 1,
                if cert.passed { "PASS" } else { "FAIL" },
                cert.envelope.case,
                cert.envelope.t_max,
                cert.u_at_horizon,
                cert.condition_ok.0,
                cert.condition_ok.1,
                cert.generator_sup,
                cert.novikov_ok,
            );
        }
        println!("overall: {}", if all_ok { "PASS" } else { "FAIL" });
    }
    Ok(if all_ok { 0 } else { 1 })
}

/// `riccati`: value-function factor slopes per insurer on the shared grid.
pub fn cmd_riccati(args: &CommonArgs) -> riskgame::Result<u8> {
    let sol = gate_and_solve(args)?;
    let mut table = Table::new(vec!["t", "insurer_id", "v3", "upsilon3", "v2"]);
    for (g, &t) in sol.t_grid.iter().enumerate() {
        for i in 0..sol.types.n_insurers() {
            let rs = &sol.riccati[sol.riccati_of_type[sol.type_of(i)]];
            table.push(vec![
                sci12(t),
                (i + 1).to_string(),
                sci12(rs.v3[g]),
                sci12(rs.ups3[g]),
                sci12(rs.v2[g]),
            ]);
        }
    }
    emit(&table, &args.out_path("riccati.csv"), args.emit_json)
        .map_err(|e| Error::Config(format!("cannot write output: {e}")))?;
    Ok(0)
}

/// `equilibrium`: strategies, their decomposition, and worst-case distortions;
/// cross-channel distortions go to a second file `vartheta_cross.csv`.
pub fn cmd_equilibrium(args: &CommonArgs) -> riskgame::Result<u8> {
    let sol = gate_and_solve(args)?;
    for (j, sup) in sol.ell_sup.iter().enumerate() {
        eprintln!("info: sup_t |ell| = {sup:.6} for insurer type {j}");
    }
    let n = sol.types.n_insurers();
    let mut table = Table::new(vec![
        "t",
        "insurer_id",
        "ell",
        "ell_myopic",
        "ell_hedge",
        "ell_comp_myopic",
        "ell_comp_hedge",
        "a_star",
        "phi_coeff",
        "chi_coeff",
        "phi_tilde",
        "vartheta_self",
    ]);
    for (g, &t) in sol.t_grid.iter().enumerate() {
        for i in 0..n {
            let j = sol.type_of(i);
            table.push(vec![
                sci12(t),
                (i + 1).to_string(),
                sci12(sol.ell[j][g]),
                sci12(sol.ell_myopic[j][g]),
                sci12(sol.ell_hedge[j][g]),
                sci12(sol.ell_comp_myopic[j][g]),
                sci12(sol.ell_comp_hedge[j][g]),
                sci12(sol.a_star[j][g]),
                sci12(sol.phi_coeff[j][g]),
                sci12(sol.chi_coeff[j][g]),
                sci12(sol.phi_tilde[j][g]),
                sci12(sol.vartheta_self[j][g]),
            ]);
        }
    }
    let main_path = args.out_path("equilibrium.csv");
    emit(&table, &main_path, args.emit_json)
        .map_err(|e| Error::Config(format!("cannot write output: {e}")))?;

    let mut cross = Table::new(vec!["t", "i", "k", "value"]);
    for (g, &t) in sol.t_grid.iter().enumerate() {
        for i in 0..n {
            for k in 0..n {
                if i == k {
                    continue;
                }
                let value = sol.vartheta_cross[sol.type_of(i)][sol.type_of(k)][g];
                cross.push(vec![
                    sci12(t),
                    (i + 1).to_string(),
                    (k + 1).to_string(),
                    sci12(value),
                ]);
            }
        }
    }
    let cross_path = main_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join("vartheta_cross.csv");
    emit(&cross, &cross_path, args.emit_json)
        .map_err(|e| Error::Config(format!("cannot write output: {e}")))?;
    Ok(0)
}

fn parse_weights(text: Option<&str>, n: usize) -> riskgame::Result<Vec<f64>> {
    match text {
        None => {
            let w = 1.0 / n as f64;
            let mut ws = vec![w; n];
            ws[n - 1] = 1.0 - w * (n - 1) as f64;
            Ok(ws)
        }
        Some(t) => {
            let ws: Vec<f64> = t
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Config(format!("bad weight {s:?}: {e}")))
                })
                .collect::<riskgame::Result<_>>()?;
            if ws.len() != n {
                return Err(Error::Config(format!(
                    "got {} weights for {n} insurers",
                    ws.len()
                )));
            }
            Ok(ws)
        }
    }
}

fn distribution_from(
    args: &CommonArgs,
    weights: Option<&str>,
) -> riskgame::Result<TypeDistribution> {
    let n = args.config.game.n();
    let ws = parse_weights(weights, n)?;
    TypeDistribution::new(args.config.game.insurers.iter().copied().zip(ws).collect())
}

/// `meanfield`: the insurers of the config act as the atoms of the type
/// distribution (uniform weights unless `--weights` is given).
pub fn cmd_meanfield(args: &CommonArgs, weights: Option<&str>) -> riskgame::Result<u8> {
    let dist = distribution_from(args, weights)?;
    let mf = mean_field_solve(
        &dist,
        &args.config.market,
        args.config.game.lambda_hat,
        args.config.game.eta_hat,
        args.config.game.horizon_t,
        args.config.numerics.steps,
        args.config.numerics.tol,
        args.config.numerics.max_iter,
    )?;
    let mut table = Table::new(vec!["t", "atom_id", "ell", "a_star", "M1", "Omega_bar"]);
    for (g, &t) in mf.t_grid.iter().enumerate() {
        for a in 0..mf.atoms.len() {
            table.push(vec![
                sci12(t),
                (a + 1).to_string(),
                sci12(mf.ell[a][g]),
                sci12(mf.a_star[a][g]),
                sci12(mf.m1[g]),
                sci12(mf.omega_bar[g]),
            ]);
        }
    }
    emit(&table, &args.out_path("meanfield.csv"), args.emit_json)
        .map_err(|e| Error::Config(format!("cannot write output: {e}")))?;
    Ok(0)
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> riskgame::Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|e| Error::Config(format!("bad {what} entry {s:?}: {e}")))
        })
        .collect()
}

/// `converge`: finite-n games sampled from the type distribution against the
/// mean-field limit.
pub fn cmd_converge(
    args: &CommonArgs,
    weights: Option<&str>,
    n_list: &str,
    seeds: &str,
) -> riskgame::Result<u8> {
    let dist = distribution_from(args, weights)?;
    let ns: Vec<usize> = parse_list(n_list, "n-list")?;
    let seed_list: Vec<u64> = parse_list(seeds, "seeds")?;
    let cells = convergence_experiment(
        &dist,
        &ns,
        &seed_list,
        &args.config.market,
        args.config.game.lambda_hat,
        args.config.game.eta_hat,
        args.config.game.horizon_t,
        args.config.numerics.steps,
        args.config.numerics.tol,
    )?;
    let mut table = Table::new(vec!["n", "seed", "err_ell", "err_a"]);
    for c in &cells {
        table.push(vec![
            c.n.to_string(),
            c.seed.to_string(),
            sci12(c.err_ell),
            sci12(c.err_a),
        ]);
    }
    emit(&table, &args.out_path("converge.csv"), args.emit_json)
        .map_err(|e| Error::Config(format!("cannot write output: {e}")))?;
    Ok(0)
}

pub fn parse_measure(text: &str, n: usize) -> riskgame::Result<Measure> {
    if text == "reference" {
        return Ok(Measure::Reference);
    }
    if let Some(rest) = text.strip_prefix("worst-case:") {
        let id: usize = rest
            .parse()
            .map_err(|e| Error::Config(format!("bad measure {text:?}: {e}")))?;
        if id == 0 || id > n {
            return Err(Error::Config(format!(
                "measure insurer {id} out of range 1..={n}"
            )));
        }
        return Ok(Measure::WorstCase(id - 1));
    }
    Err(Error::Config(format!(
        "measure must be 'reference' or 'worst-case:<insurer>', got {text:?}"
    )))
}

/// `simulate`: Monte Carlo summary (quantity, estimate, std_error), plus the
/// per-path terminal relative wealth of the measure insurer on request.
pub fn cmd_simulate(
    args: &CommonArgs,
    measure: &str,
    dump_terminal: bool,
    obs_times: Option<&str>,
) -> riskgame::Result<u8> {
    let game = &args.config.game;
    let measure = parse_measure(measure, game.n())?;
    let sol = gate_and_solve(args)?;
    let mut cfg = SimulationConfig::new(
        args.config.numerics.paths,
        args.config.numerics.dt_or_default(game.horizon_t),
        args.config.numerics.seed,
        measure,
    );
    cfg.max_cells = args.config.numerics.max_cells;
    if let Some(text) = obs_times {
        cfg.obs_times = parse_list(text, "obs-times")?;
    }
    let bundle = simulate(game, &args.config.market, &sol, &cfg)?;

    let mut table = Table::new(vec!["quantity", "estimate", "std_error"]);
    if bundle.paths() >= 2 {
        let nf = bundle.paths() as f64;
        let stats = |xs: &[f64]| -> (f64, f64) {
            let mean = xs.iter().sum::<f64>() / nf;
            let var = xs.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0);
            (mean, (var / nf).sqrt())
        };
        for i in 0..game.n() {
            let (my, se_my) = stats(&bundle.terminal_y[i]);
            table.push(vec![format!("mean_Y_{}", i + 1), sci12(my), sci12(se_my)]);
            let var = bundle.terminal_y[i]
                .iter()
                .map(|&v| (v - my) * (v - my))
                .sum::<f64>()
                / (nf - 1.0);
            table.push(vec![
                format!("var_Y_{}", i + 1),
                sci12(var),
                sci12(var * (2.0 / (nf - 1.0)).sqrt()),
            ]);
            let (mx, se_mx) = stats(&bundle.terminal_x[i]);
            table.push(vec![format!("mean_X_{}", i + 1), sci12(mx), sci12(se_mx)]);
            if matches!(measure, Measure::WorstCase(j) if j == i) {
                let est = estimate_objective(i, &bundle, game)?;
                table.push(vec![
                    format!("penalty_{}", i + 1),
                    sci12(est.penalty),
                    sci12(est.se_penalty),
                ]);
                table.push(vec![
                    format!("J_{}", i + 1),
                    sci12(est.j_value),
                    sci12(est.se_j),
                ]);
            }
        }
        for (slot, &t) in bundle.obs_times.iter().enumerate() {
            let (mz, se_mz) = stats(&bundle.z_obs[slot]);
            table.push(vec![
                format!("mean_Z@{}", sci12(t)),
                sci12(mz),
                sci12(se_mz),
            ]);
        }
    }
    let main_path = args.out_path("simulate.csv");
    emit(&table, &main_path, args.emit_json)
        .map_err(|e| Error::Config(format!("cannot write output: {e}")))?;

    if dump_terminal {
        let focus = match measure {
            Measure::WorstCase(i) => i,
            Measure::Reference => 0,
        };
        let mut dump = Table::new(vec!["path_id", "Y_T"]);
        for (p, &y) in bundle.terminal_y[focus].iter().enumerate() {
            dump.push(vec![p.to_string(), sci12(y)]);
        }
        let dump_path = main_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join("terminal.csv");
        emit(&dump, &dump_path, args.emit_json)
            .map_err(|e| Error::Config(format!("cannot write output: {e}")))?;
    }
    Ok(0)
}

/// Set one parameter by path, e.g. `game.lambda_hat`, `market.rho`, or
/// `insurers[0].theta` (0-based insurer index).
pub fn set_param(config: &mut Config, path: &str, value: f64) -> riskgame::Result<()> {
    let bad = || Error::Config(format!("unknown parameter path {path:?}"));
    if let Some(field) = path.strip_prefix("game.") {
        match field {
            "lambda_hat" => config.game.lambda_hat = value,
            "eta_hat" => config.game.eta_hat = value,
            "horizon_t" => config.game.horizon_t = value,
            _ => return Err(bad()),
        }
        return Ok(());
    }
    if let Some(field) = path.strip_prefix("market.") {
        let m = &mut config.market;
        match field {
            "r" => m.r = value,
            "m" => m.m = value,
            "a" => m.a = value,
            "b" => m.b = value,
            "kappa" => m.kappa = value,
            "z_bar" => m.z_bar = value,
            "nu" => m.nu = value,
            "rho" => m.rho = value,
            "z0" => m.z0 = value,
            _ => return Err(bad()),
        }
        return Ok(());
    }
    if let Some(rest) = path.strip_prefix("insurers[") {
        let (idx_text, field) = rest.split_once("].").ok_or_else(bad)?;
        let idx: usize = idx_text.parse().map_err(|_| bad())?;
        let u = config
            .game
            .insurers
            .get_mut(idx)
            .ok_or_else(|| Error::Config(format!("insurer index {idx} out of range")))?;
        match field {
            "x0" => u.x0 = value,
            "lambda" => u.lambda = value,
            "mu1" => u.mu1 = value,
            "mu2" => u.mu2 = value,
            "eta" => u.eta = value,
            "theta" => u.theta = value,
            "delta" => u.delta = value,
            "psi" => u.psi = value,
            _ => return Err(bad()),
        }
        return Ok(());
    }
    Err(bad())
}

enum Quantity {
    AStar(usize),
    Ell(usize),
}

fn parse_quantity(text: &str, n: usize) -> riskgame::Result<Quantity> {
    let (kind, id) = text.split_once(':').ok_or_else(|| {
        Error::Config(format!(
            "quantity must be 'a_star:<insurer>' or 'ell:<insurer>', got {text:?}"
        ))
    })?;
    let id: usize = id
        .parse()
        .map_err(|e| Error::Config(format!("bad insurer id in {text:?}: {e}")))?;
    if id == 0 || id > n {
        return Err(Error::Config(format!(
            "insurer id {id} out of range 1..={n}"
        )));
    }
    match kind {
        "a_star" => Ok(Quantity::AStar(id - 1)),
        "ell" => Ok(Quantity::Ell(id - 1)),
        _ => Err(Error::Config(format!("unknown quantity kind {kind:?}"))),
    }
}

/// `sweep`: re-solve the game for each value of one parameter and extract a
/// quantity at a fixed time or over the whole grid. Per-value failures land in
/// the status column and flip the exit code to 1; the file is still written.
#[allow(clippy::too_many_arguments)]
pub fn cmd_sweep(
    args: &CommonArgs,
    param: &str,
    from: f64,
    to: f64,
    sweep_steps: usize,
    at_time: Option<f64>,
    quantity: &str,
) -> riskgame::Result<u8> {
    if sweep_steps < 2 {
        return Err(Error::Config(format!(
            "sweep needs at least 2 steps, got {sweep_steps}"
        )));
    }
    if from == to {
        return Err(Error::Config("sweep endpoints must differ".into()));
    }
    let quantity_sel = parse_quantity(quantity, args.config.game.n())?;

    let mut table = Table::new(vec!["param", "value", "t", "quantity", "result", "status"]);
    let mut any_failed = false;
    for step in 0..sweep_steps {
        let value = from + (to - from) * step as f64 / (sweep_steps - 1) as f64;
        let mut config = args.config.clone();
        // A malformed path is a usage error, not a per-value status row.
        set_param(&mut config, param, value)?;
        let sub = CommonArgs {
            config,
            out: None,
            force: args.force,
            emit_json: false,
        };
        let solved = gate_and_solve(&sub);
        match solved {
            Err(e) => {
                any_failed = true;
                let t_text = at_time.map(sci12).unwrap_or_default();
                table.push(vec![
                    param.to_string(),
                    sci12(value),
                    t_text,
                    quantity.to_string(),
                    String::new(),
                    format!("error: {e}").replace(',', ";"),
                ]);
            }
            Ok(sol) => {
                let extract = |g: usize| -> f64 {
                    match quantity_sel {
                        Quantity::AStar(i) => sol.a_star[sol.type_of(i)][g],
                        Quantity::Ell(i) => sol.ell[sol.type_of(i)][g],
                    }
                };
                match at_time {
                    Some(t) => {
                        let horizon = sol.horizon();
                        if !(0.0..=horizon).contains(&t) {
                            any_failed = true;
                            table.push(vec![
                                param.to_string(),
                                sci12(value),
                                sci12(t),
                                quantity.to_string(),
                                String::new(),
                                format!("error: time {t} outside [0, {horizon}]"),
                            ]);
                        } else {
                            let g = ((t / horizon) * sol.steps() as f64).round() as usize;
                            table.push(vec![
                                param.to_string(),
                                sci12(value),
                                sci12(sol.t_grid[g]),
                                quantity.to_string(),
                                sci12(extract(g)),
                                "ok".to_string(),
                            ]);
                        }
                    }
                    None => {
                        for (g, &t) in sol.t_grid.iter().enumerate() {
                            table.push(vec![
                                param.to_string(),
                                sci12(value),
                                sci12(t),
                                quantity.to_string(),
                                sci12(extract(g)),
                                "ok".to_string(),
                            ]);
                        }
                    }
                }
            }
        }
    }
    emit(&table, &args.out_path("sweep.csv"), args.emit_json)
        .map_err(|e| Error::Config(format!("cannot write output: {e}")))?;
    Ok(if any_failed { 1 } else { 0 })
}
