//! Robust n-insurer equilibrium.
//!
//! Strategies are parameterized by the investment coefficient `ell_i(t)` with
//! `pi_i(t) = ell_i(t) Z / (a Z + b)` and the retained reinsurance proportion
//! `a_i(t) in [0, 1]`. The equilibrium investment is closed-form in the
//! per-insurer signal `S_i`; the reinsurance proportions solve a coupled
//! fixed point with a clamp at full retention, started from the explicit
//! solution of the unclamped linear system and iterated monotonically.
//!
//! Insurers with identical type vectors (ignoring initial surplus) share one
//! strategy; computations are grouped by distinct type, which keeps large
//! homogeneous games cheap and is exact, not an approximation.

use crate::error::{Error, Result};
use crate::model::{validate_game, GameConfig, InsurerType, MarketParams};
use crate::riccati::{
    build_coefficients, existence_check, solve_riccati, uniform_grid, ExistenceReport,
    RiccatiSolution,
};

/// Insurers grouped by distinct type; `x0` is ignored by the grouping since it
/// never enters a strategy.
#[derive(Debug, Clone)]
pub struct TypeSet {
    /// Representative type per group.
    pub types: Vec<InsurerType>,
    /// Number of insurers in each group.
    pub counts: Vec<usize>,
    /// Group index of each insurer.
    pub of_insurer: Vec<usize>,
}

impl TypeSet {
    pub fn group(insurers: &[InsurerType]) -> TypeSet {
        let key = |u: &InsurerType| {
            (
                u.lambda.to_bits(),
                u.mu1.to_bits(),
                u.mu2.to_bits(),
                u.eta.to_bits(),
                u.theta.to_bits(),
                u.delta.to_bits(),
                u.psi.to_bits(),
            )
        };
        let mut types: Vec<InsurerType> = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        let mut of_insurer = Vec::with_capacity(insurers.len());
        for u in insurers {
            let k = key(u);
            match types.iter().position(|t| key(t) == k) {
                Some(j) => {
                    counts[j] += 1;
                    of_insurer.push(j);
                }
                None => {
                    types.push(*u);
                    counts.push(1);
                    of_insurer.push(types.len() - 1);
                }
            }
        }
        TypeSet {
            types,
            counts,
            of_insurer,
        }
    }

    pub fn n_insurers(&self) -> usize {
        self.of_insurer.len()
    }
}

/// Per-insurer strategy coefficients at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SrqpCoefficients {
    /// Investment signal (discounted): the no-competition part of `ell`.
    pub s: f64,
    /// Own-retention coefficient of the reinsurance equation (> 0).
    pub r: f64,
    /// Competition coefficient of the reinsurance equation (>= 0).
    pub q: f64,
    /// Constant of the reinsurance equation (> 0).
    pub p: f64,
}

/// Strategy coefficients for one insurer at discount leg `e1 = e^{r(T-t)}`,
/// factor slopes `(v3, ups3)`, and competition dilution `theta_over_n`
/// (`theta_i / n` for the n-insurer game, 0 in the mean-field limit).
#[allow(clippy::too_many_arguments)]
pub fn srqp_at(
    insurer: &InsurerType,
    market: &MarketParams,
    lambda_hat: f64,
    eta_hat: f64,
    theta_over_n: f64,
    v3: f64,
    ups3: f64,
    e1: f64,
) -> SrqpCoefficients {
    let e2 = e1 * e1;
    let aversion = insurer.psi + insurer.delta;
    let claim_rate = (insurer.lambda + lambda_hat) * insurer.mu2;
    SrqpCoefficients {
        s: (market.m - market.nu * market.rho * (v3 * insurer.psi + insurer.delta * ups3))
            / (aversion * e1),
        r: claim_rate * ((1.0 - theta_over_n) * aversion * e2 + 2.0 * eta_hat * e1),
        q: lambda_hat * insurer.theta * insurer.mu1 * aversion * e2,
        p: 2.0 * eta_hat * claim_rate * e1,
    }
}

/// Equilibrium investment coefficients from the signals:
/// `ell_i = S_i + theta_i (sum_k S_k) / (n - sum_k theta_k)`.
///
/// `s`, `thetas`, `counts` are per distinct type; `n` is the total insurer
/// count. Errors when `n = sum theta_k`.
pub fn investment_from_signals(
    s: &[f64],
    thetas: &[f64],
    counts: &[usize],
    n: usize,
) -> Result<Vec<f64>> {
    let theta_sum: f64 = thetas
        .iter()
        .zip(counts)
        .map(|(&th, &c)| th * c as f64)
        .sum();
    let margin = n as f64 - theta_sum;
    if margin == 0.0 {
        return Err(Error::DegenerateCompetition { n, theta_sum });
    }
    let s_sum: f64 = s.iter().zip(counts).map(|(&v, &c)| v * c as f64).sum();
    Ok(s.iter()
        .zip(thetas)
        .map(|(&si, &th)| si + th * s_sum / margin)
        .collect())
}

/// Explicit solution of the unclamped reinsurance system, per distinct type.
///
/// Errors when the system denominator `n - sum_k n mu_k1 Q_k / (mu_k1 Q_k + n R_k)`
/// is not positive.
pub fn reinsurance_unconstrained(
    srqp: &[SrqpCoefficients],
    mu1: &[f64],
    counts: &[usize],
    n: usize,
    t: f64,
) -> Result<Vec<f64>> {
    let nf = n as f64;
    let mut weight_sum = 0.0; // sum_k c_k * n mu_k1 Q_k / (mu_k1 Q_k + n R_k)
    let mut push_sum = 0.0; // sum_k c_k * n mu_k1 P_k / (mu_k1 Q_k + n R_k)
    for ((c, &m1), &cnt) in srqp.iter().zip(mu1).zip(counts) {
        let d = m1 * c.q + nf * c.r;
        weight_sum += cnt as f64 * nf * m1 * c.q / d;
        push_sum += cnt as f64 * nf * m1 * c.p / d;
    }
    let denominator = nf - weight_sum;
    if denominator <= 0.0 {
        return Err(Error::SingularSystem { t, denominator });
    }
    Ok(srqp
        .iter()
        .zip(mu1)
        .map(|(c, &m1)| {
            let d = m1 * c.q + nf * c.r;
            nf * c.q / d * push_sum / denominator + nf * c.p / d
        })
        .collect())
}

/// Outcome of the clamped reinsurance fixed point at one time.
#[derive(Debug, Clone)]
pub struct FixedPointOutcome {
    /// Converged proportions per distinct type, each in [0, 1].
    pub a_star: Vec<f64>,
    pub iterations: usize,
    /// Final residual `max_i |a_i - map(a_i)|`.
    pub residual: f64,
}

/// Iterate `a <- min(Q/R * (1/n) sum_{k != i} mu_k1 a_k + P/R, 1)` from the
/// unclamped start. The iterate sequence is pointwise nonincreasing and
/// nonnegative (checked each sweep); convergence is declared when successive
/// iterates move less than `tol`.
pub fn reinsurance_fixed_point(
    srqp: &[SrqpCoefficients],
    mu1: &[f64],
    counts: &[usize],
    n: usize,
    t: f64,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPointOutcome> {
    let start = reinsurance_unconstrained(srqp, mu1, counts, n, t)?;
    let nf = n as f64;
    let map = |a: &[f64], out: &mut Vec<f64>| {
        let s_tot: f64 = a
            .iter()
            .zip(mu1)
            .zip(counts)
            .map(|((&ai, &m1), &c)| c as f64 * m1 * ai)
            .sum();
        out.clear();
        out.extend(srqp.iter().zip(mu1).zip(a).map(|((c, &m1), &ai)| {
            let peers = (s_tot - m1 * ai) / nf;
            (c.q / c.r * peers + c.p / c.r).min(1.0)
        }));
    };

    let mut a = start;
    let mut next = Vec::with_capacity(a.len());
    for iter in 1..=max_iter {
        map(&a, &mut next);
        let mut diff = 0.0_f64;
        for (j, (&new, &old)) in next.iter().zip(&a).enumerate() {
            if new > old + 1e-10 {
                return Err(Error::InvariantViolation(format!(
                    "reinsurance iterate increased at t = {t}, type {j}: {old} -> {new}"
                )));
            }
            if new < 0.0 {
                return Err(Error::InvariantViolation(format!(
                    "reinsurance iterate went negative at t = {t}, type {j}: {new}"
                )));
            }
            diff = diff.max((new - old).abs());
        }
        std::mem::swap(&mut a, &mut next);
        if diff < tol {
            map(&a, &mut next);
            let residual = a
                .iter()
                .zip(&next)
                .map(|(&x, &y)| (x - y).abs())
                .fold(0.0_f64, f64::max);
            return Ok(FixedPointOutcome {
                a_star: a,
                iterations: iter,
                residual,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual: f64::NAN,
        tol,
    })
}

/// Worst-case drift distortions chosen by one insurer's adversary at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct WorstCaseGenerators {
    /// Coefficient of `sqrt(Z)` in the stock-shock distortion.
    pub phi_coeff: f64,
    /// Coefficient of `sqrt(Z)` in the factor-shock distortion.
    pub chi_coeff: f64,
    /// Common-claim-shock distortion (deterministic).
    pub phi_tilde: f64,
    /// Idiosyncratic-shock distortions, one entry per insurer; entry `i` is the
    /// insurer's own channel, entries `k != i` respond to peers.
    pub vartheta: Vec<f64>,
}

/// Worst-case generators for insurer `i` given every insurer's retained
/// proportion `a_star` and insurer `i`'s factor slopes. Validates the insurer.
#[allow(clippy::too_many_arguments)]
pub fn worst_case_generators(
    i: usize,
    insurers: &[InsurerType],
    market: &MarketParams,
    lambda_hat: f64,
    v3_i: f64,
    ups3_i: f64,
    e1: f64,
    a_star: &[f64],
) -> Result<WorstCaseGenerators> {
    let issues = insurers[i].issues(lambda_hat);
    if !issues.is_empty() {
        return Err(Error::Domain(issues.join("; ")));
    }
    Ok(worst_case_generators_unchecked(
        i, insurers, market, lambda_hat, v3_i, ups3_i, e1, a_star,
    ))
}

/// Same as [`worst_case_generators`] without validating the insurer; the
/// ambiguity-neutral limit `psi = 0` is admitted here as a diagnostic (every
/// generator is then zero).
#[allow(clippy::too_many_arguments)]
pub fn worst_case_generators_unchecked(
    i: usize,
    insurers: &[InsurerType],
    market: &MarketParams,
    lambda_hat: f64,
    v3_i: f64,
    ups3_i: f64,
    e1: f64,
    a_star: &[f64],
) -> WorstCaseGenerators {
    let n = insurers.len() as f64;
    let me = &insurers[i];
    let own_weight = 1.0 - me.theta / n;
    let peer_weight = me.theta / n;

    let s_i = (market.m - market.nu * market.rho * (v3_i * me.psi + me.delta * ups3_i))
        / ((me.psi + me.delta) * e1);
    let phi_coeff = -(market.nu * market.rho * v3_i + s_i * e1) * me.psi;
    let chi_coeff = -market.nu * (1.0 - market.rho * market.rho).sqrt() * v3_i * me.psi;

    let peer_retained: f64 = insurers
        .iter()
        .zip(a_star)
        .enumerate()
        .filter(|(k, _)| *k != i)
        .map(|(_, (u, &a))| u.mu1 * a)
        .sum();
    let phi_tilde = -lambda_hat.sqrt()
        * (own_weight * me.mu1 * a_star[i] - peer_weight * peer_retained)
        * e1
        * me.psi;

    let vartheta = insurers
        .iter()
        .zip(a_star)
        .enumerate()
        .map(|(k, (u, &a))| {
            let idio = u.idiosyncratic_variance(lambda_hat).max(0.0).sqrt();
            if k == i {
                -own_weight * a * idio * e1 * me.psi
            } else {
                peer_weight * a * idio * e1 * me.psi
            }
        })
        .collect();

    WorstCaseGenerators {
        phi_coeff,
        chi_coeff,
        phi_tilde,
        vartheta,
    }
}

/// Stationarity residuals of the computed equilibrium for one insurer at one
/// grid point.
#[derive(Debug, Clone, Copy)]
pub struct StationarityResidual {
    /// `|(1 - theta/n) ell_i - (theta/n) sum_{k != i} ell_k - S_i|`.
    pub ell_residual: f64,
    /// Residual of the reinsurance first-order equation
    /// `P + Q (1/n) sum_{k != i} mu_k1 a_k - a R`; reported one-sided when the
    /// proportion is clamped at 1.
    pub a_residual: f64,
    /// Retention clamped at full (`a = 1`); the first-order equation then holds
    /// as an inequality and only the flag is meaningful.
    pub clamped: bool,
}

/// Solver controls for the equilibrium pipeline.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Uniform RK4 intervals over [0, T].
    pub steps: usize,
    /// Fixed-point tolerance.
    pub tol: f64,
    /// Fixed-point iteration cap.
    pub max_iter: usize,
    /// Tolerate soft validity failures (parameter-domain and moment checks).
    /// Hard failures (Feller, degenerate competition) always abort.
    pub allow_soft: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            steps: 10_000,
            tol: 1e-12,
            max_iter: 10_000,
            allow_soft: false,
        }
    }
}

/// Full n-insurer equilibrium on a shared uniform grid. All per-type arrays
/// are indexed `[type][grid]`; map insurers to types through `types.of_insurer`.
#[derive(Debug, Clone)]
pub struct GameSolution {
    pub game: GameConfig,
    pub market: MarketParams,
    pub types: TypeSet,
    /// Shared calendar grid `t_j = T j / steps`.
    pub t_grid: Vec<f64>,
    /// One Riccati solution per distinct `(delta, psi)` pair.
    pub riccati: Vec<RiccatiSolution>,
    /// Existence certificate per distinct `(delta, psi)` pair.
    pub existence: Vec<ExistenceReport>,
    /// Riccati index per type.
    pub riccati_of_type: Vec<usize>,
    /// Strategy coefficients per type and grid point.
    pub srqp: Vec<Vec<SrqpCoefficients>>,
    /// Investment coefficient `ell` and its four addends (myopic, hedging,
    /// competition-myopic, competition-hedging).
    pub ell: Vec<Vec<f64>>,
    pub ell_myopic: Vec<Vec<f64>>,
    pub ell_hedge: Vec<Vec<f64>>,
    pub ell_comp_myopic: Vec<Vec<f64>>,
    pub ell_comp_hedge: Vec<Vec<f64>>,
    /// Unclamped reinsurance proportions (start of the fixed point).
    pub a_unconstrained: Vec<Vec<f64>>,
    /// Equilibrium retained proportions in [0, 1].
    pub a_star: Vec<Vec<f64>>,
    /// Worst-case distortion coefficients per type and grid point.
    pub phi_coeff: Vec<Vec<f64>>,
    pub chi_coeff: Vec<Vec<f64>>,
    pub phi_tilde: Vec<Vec<f64>>,
    pub vartheta_self: Vec<Vec<f64>>,
    /// Cross distortions `vartheta[i-type][k-type][grid]`, valid for any
    /// ordered pair of distinct insurers drawn from those types.
    pub vartheta_cross: Vec<Vec<Vec<f64>>>,
    /// Constant terms of the two value functions.
    pub v1: Vec<Vec<f64>>,
    pub ups1: Vec<Vec<f64>>,
    /// Largest fixed-point residual across the grid.
    pub max_fixed_point_residual: f64,
    /// Largest iteration count across the grid.
    pub max_fixed_point_iterations: usize,
    /// Measured `sup_t |ell_i(t)|` per type (admissibility diagnostic; reported,
    /// not gated).
    pub ell_sup: Vec<f64>,
}

impl GameSolution {
    pub fn steps(&self) -> usize {
        self.t_grid.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.t_grid.last().unwrap()
    }

    /// Group index of insurer `i`.
    pub fn type_of(&self, insurer: usize) -> usize {
        self.types.of_insurer[insurer]
    }

    /// Discount leg at grid index `g`.
    pub fn e1(&self, g: usize) -> f64 {
        self.riccati[0].v2[g]
    }

    /// Candidate value function `v(t_g, y, z) = v1 + y e^{r(T-t)} + v3 z` for
    /// an insurer of type `j`.
    pub fn value_at(&self, j: usize, g: usize, y: f64, z: f64) -> f64 {
        self.v1[j][g] + y * self.e1(g) + self.riccati[self.riccati_of_type[j]].v3[g] * z
    }

    /// Stationarity residuals for every type at grid index `g`.
    pub fn stationarity_residuals_at(&self, g: usize) -> Vec<StationarityResidual> {
        let n = self.types.n_insurers() as f64;
        let ell_sum: f64 = self
            .ell
            .iter()
            .zip(&self.types.counts)
            .map(|(e, &c)| e[g] * c as f64)
            .sum();
        let retained_sum: f64 = self
            .a_star
            .iter()
            .zip(&self.types.types)
            .zip(&self.types.counts)
            .map(|((a, u), &c)| a[g] * u.mu1 * c as f64)
            .sum();
        (0..self.types.types.len())
            .map(|j| {
                let u = &self.types.types[j];
                let ell = self.ell[j][g];
                let own_weight = 1.0 - u.theta / n;
                let ell_residual =
                    (own_weight * ell - u.theta / n * (ell_sum - ell) - self.srqp[j][g].s).abs();
                let a = self.a_star[j][g];
                let c = self.srqp[j][g];
                let peers = (retained_sum - u.mu1 * a) / n;
                let a_residual = (c.p + c.q * peers - a * c.r).abs();
                StationarityResidual {
                    ell_residual,
                    a_residual,
                    clamped: a == 1.0,
                }
            })
            .collect()
    }
}

/// Inputs for the value-constant-term integrands of one type at one time.
struct ValueTermInputs<'a> {
    /// Retained proportion per type at this time.
    a: &'a [f64],
    v3: f64,
    ups3: f64,
    e1: f64,
}

/// Per-type constants reused by the value-term integration.
struct ValueTermContext<'a> {
    types: &'a TypeSet,
    market: &'a MarketParams,
    lambda_hat: f64,
    eta_hat: f64,
    /// Idiosyncratic volatility per type.
    idio: &'a [f64],
    /// Type index being integrated.
    j: usize,
}

/// Integrands of `-v1'` and `-ups1'` (so that the value constants are plain
/// time integrals of these from `t` to `T`).
fn value_term_integrands(ctx: &ValueTermContext, inp: &ValueTermInputs) -> (f64, f64) {
    let ts = ctx.types;
    let n = ts.n_insurers() as f64;
    let j = ctx.j;
    let u = &ts.types[j];
    let own_weight = 1.0 - u.theta / n;
    let peer_weight = u.theta / n;
    let (e1, e2) = (inp.e1, inp.e1 * inp.e1);
    let a_j = inp.a[j];

    // Net insurance drift of type k at retained proportion a.
    let ins = |k: usize, a: f64| -> f64 {
        let w = &ts.types[k];
        let rate = w.lambda + ctx.lambda_hat;
        w.eta * rate * w.mu1 - ctx.eta_hat * (1.0 - a) * (1.0 - a) * rate * w.mu2
    };
    let ins_all: f64 = (0..ts.types.len())
        .map(|k| ts.counts[k] as f64 * ins(k, inp.a[k]))
        .sum();
    let ins_net = own_weight * ins(j, a_j) - peer_weight * (ins_all - ins(j, a_j));

    let retained_all: f64 = (0..ts.types.len())
        .map(|k| ts.counts[k] as f64 * ts.types[k].mu1 * inp.a[k])
        .sum();
    let retained_peers = retained_all - u.mu1 * a_j;

    // Worst-case generators at this time (same closed forms as the profile).
    let phi_tilde = -ctx.lambda_hat.sqrt()
        * (own_weight * u.mu1 * a_j - peer_weight * retained_peers)
        * e1
        * u.psi;
    let vt_self = -own_weight * a_j * ctx.idio[j] * e1 * u.psi;
    let own_gen =
        own_weight * a_j * (ctx.lambda_hat.sqrt() * u.mu1 * phi_tilde + ctx.idio[j] * vt_self);
    let peer_gen: f64 = (0..ts.types.len())
        .map(|k| {
            let cnt = ts.counts[k] as f64 - if k == j { 1.0 } else { 0.0 };
            let vt_cross = peer_weight * inp.a[k] * ctx.idio[k] * e1 * u.psi;
            cnt * inp.a[k]
                * (ctx.lambda_hat.sqrt() * ts.types[k].mu1 * phi_tilde + ctx.idio[k] * vt_cross)
        })
        .sum();
    let gen_net = own_gen - peer_weight * peer_gen;

    let ups1_integrand =
        ctx.market.kappa * ctx.market.z_bar * inp.ups3 + ins_net * e1 + gen_net * e1;

    let sq_peers: f64 = (0..ts.types.len())
        .map(|k| {
            let cnt = ts.counts[k] as f64 - if k == j { 1.0 } else { 0.0 };
            cnt * inp.a[k] * inp.a[k] * ctx.idio[k] * ctx.idio[k]
        })
        .sum();
    let mix = own_weight * u.mu1 * a_j - peer_weight * retained_peers;
    let v1_integrand = ctx.market.kappa * ctx.market.z_bar * inp.v3 + ins_net * e1
        - 0.5
            * u.delta
            * own_weight
            * own_weight
            * a_j
            * a_j
            * (ctx.lambda_hat + u.lambda)
            * u.mu2
            * e2
        - 0.5 * u.delta * peer_weight * peer_weight * sq_peers * e2
        - 0.5
            * u.delta
            * ctx.lambda_hat
            * peer_weight
            * peer_weight
            * retained_peers
            * retained_peers
            * e2
        + u.delta * ctx.lambda_hat * peer_weight * own_weight * a_j * u.mu1 * retained_peers * e2
        - 0.5 * ctx.lambda_hat * mix * mix * e2 * u.psi
        - 0.5 * own_weight * own_weight * a_j * a_j * ctx.idio[j] * ctx.idio[j] * e2 * u.psi
        - 0.5 * peer_weight * peer_weight * sq_peers * e2 * u.psi;

    (v1_integrand, ups1_integrand)
}

fn lerp_mid(values: &[f64], g: usize) -> f64 {
    0.5 * (values[g] + values[g + 1])
}

/// Solve the full n-insurer equilibrium pipeline.
///
/// Validity gating: hard failures abort always; soft failures abort unless
/// `opts.allow_soft`. Existence certificates are computed and carried in the
/// result but do not gate (the integrator keeps its own growth guard).
pub fn solve_game(
    game: &GameConfig,
    market: &MarketParams,
    opts: &SolveOptions,
) -> Result<GameSolution> {
    let report = validate_game(game, market);
    if let Some(check) = report.hard_failures().first() {
        return Err(Error::Validity(format!("{}: {}", check.name, check.detail)));
    }
    if !opts.allow_soft {
        if let Some(check) = report.soft_failures().first() {
            return Err(Error::Validity(format!("{}: {}", check.name, check.detail)));
        }
    }

    let horizon = game.horizon_t;
    let steps = opts.steps;
    let types = TypeSet::group(&game.insurers);
    let n = types.n_insurers();
    let nf = n as f64;
    let t_grid = uniform_grid(horizon, steps);

    // One Riccati solve per distinct (delta, psi).
    let mut riccati: Vec<RiccatiSolution> = Vec::new();
    let mut existence: Vec<ExistenceReport> = Vec::new();
    let mut keys: Vec<(u64, u64)> = Vec::new();
    let mut riccati_of_type = Vec::with_capacity(types.types.len());
    for u in &types.types {
        let key = (u.delta.to_bits(), u.psi.to_bits());
        let idx = match keys.iter().position(|&k| k == key) {
            Some(idx) => idx,
            None => {
                let coeffs = build_coefficients(u, market);
                let report = existence_check(&coeffs, u, market, horizon);
                let sol = solve_riccati(&coeffs, market, &report, horizon, steps)?;
                riccati.push(sol);
                existence.push(report);
                keys.push(key);
                keys.len() - 1
            }
        };
        riccati_of_type.push(idx);
    }

    let n_types = types.types.len();
    let grid_len = steps + 1;
    let mut srqp = vec![Vec::with_capacity(grid_len); n_types];
    let mut ell = vec![vec![0.0; grid_len]; n_types];
    let mut ell_myopic = vec![vec![0.0; grid_len]; n_types];
    let mut ell_hedge = vec![vec![0.0; grid_len]; n_types];
    let mut ell_comp_myopic = vec![vec![0.0; grid_len]; n_types];
    let mut ell_comp_hedge = vec![vec![0.0; grid_len]; n_types];
    let mut a_unconstrained = vec![vec![0.0; grid_len]; n_types];
    let mut a_star = vec![vec![0.0; grid_len]; n_types];
    let mut phi_coeff = vec![vec![0.0; grid_len]; n_types];
    let mut chi_coeff = vec![vec![0.0; grid_len]; n_types];
    let mut phi_tilde = vec![vec![0.0; grid_len]; n_types];
    let mut vartheta_self = vec![vec![0.0; grid_len]; n_types];
    let mut vartheta_cross = vec![vec![vec![0.0; grid_len]; n_types]; n_types];

    let mu1: Vec<f64> = types.types.iter().map(|u| u.mu1).collect();
    let thetas: Vec<f64> = types.types.iter().map(|u| u.theta).collect();
    let theta_sum: f64 = thetas
        .iter()
        .zip(&types.counts)
        .map(|(&th, &c)| th * c as f64)
        .sum();
    let margin = nf - theta_sum;
    if margin == 0.0 {
        return Err(Error::DegenerateCompetition { n, theta_sum });
    }
    let idio: Vec<f64> = types
        .types
        .iter()
        .map(|u| u.idiosyncratic_variance(game.lambda_hat).max(0.0).sqrt())
        .collect();

    let mut max_residual = 0.0_f64;
    let mut max_iterations = 0usize;

    for g in 0..grid_len {
        let t = t_grid[g];
        let e1 = riccati[0].v2[g];

        for j in 0..n_types {
            let u = &types.types[j];
            let rs = &riccati[riccati_of_type[j]];
            srqp[j].push(srqp_at(
                u,
                market,
                game.lambda_hat,
                game.eta_hat,
                u.theta / nf,
                rs.v3[g],
                rs.ups3[g],
                e1,
            ));
        }

        // Investment: closed form plus its four addends.
        let s_now: Vec<f64> = (0..n_types).map(|j| srqp[j][g].s).collect();
        let ell_now = investment_from_signals(&s_now, &thetas, &types.counts, n)?;
        let e_neg = 1.0 / e1;
        let myopic: Vec<f64> = types
            .types
            .iter()
            .map(|u| e_neg * market.m / (u.psi + u.delta))
            .collect();
        let hedge: Vec<f64> = types
            .types
            .iter()
            .enumerate()
            .map(|(j, u)| {
                let rs = &riccati[riccati_of_type[j]];
                -e_neg * market.nu * market.rho * (rs.v3[g] * u.psi + u.delta * rs.ups3[g])
                    / (u.psi + u.delta)
            })
            .collect();
        let myopic_sum: f64 = myopic
            .iter()
            .zip(&types.counts)
            .map(|(&v, &c)| v * c as f64)
            .sum();
        let hedge_sum: f64 = hedge
            .iter()
            .zip(&types.counts)
            .map(|(&v, &c)| v * c as f64)
            .sum();
        for j in 0..n_types {
            ell[j][g] = ell_now[j];
            ell_myopic[j][g] = myopic[j];
            ell_hedge[j][g] = hedge[j];
            ell_comp_myopic[j][g] = thetas[j] * myopic_sum / margin;
            ell_comp_hedge[j][g] = thetas[j] * hedge_sum / margin;
        }

        // Reinsurance fixed point from the unclamped start.
        let row = srqp_row(&srqp, g);
        let start = reinsurance_unconstrained(&row, &mu1, &types.counts, n, t)?;
        let outcome =
            reinsurance_fixed_point(&row, &mu1, &types.counts, n, t, opts.tol, opts.max_iter)?;
        max_residual = max_residual.max(outcome.residual);
        max_iterations = max_iterations.max(outcome.iterations);
        for j in 0..n_types {
            a_unconstrained[j][g] = start[j];
            a_star[j][g] = outcome.a_star[j];
        }

        // Worst-case distortions.
        let retained_sum: f64 = (0..n_types)
            .map(|j| types.counts[j] as f64 * mu1[j] * a_star[j][g])
            .sum();
        for j in 0..n_types {
            let u = &types.types[j];
            let rs = &riccati[riccati_of_type[j]];
            let own_weight = 1.0 - u.theta / nf;
            phi_coeff[j][g] = -(market.nu * market.rho * rs.v3[g] + srqp[j][g].s * e1) * u.psi;
            chi_coeff[j][g] =
                -market.nu * (1.0 - market.rho * market.rho).sqrt() * rs.v3[g] * u.psi;
            let peers = retained_sum - mu1[j] * a_star[j][g];
            phi_tilde[j][g] = -game.lambda_hat.sqrt()
                * (own_weight * mu1[j] * a_star[j][g] - u.theta / nf * peers)
                * e1
                * u.psi;
            vartheta_self[j][g] = -own_weight * a_star[j][g] * idio[j] * e1 * u.psi;
            for k in 0..n_types {
                vartheta_cross[j][k][g] = u.theta / nf * a_star[k][g] * idio[k] * e1 * u.psi;
            }
        }
    }

    // Constant value terms: backward quadrature of the drift terms with the
    // equilibrium substituted (midpoint inputs linearly interpolated).
    let h = horizon / steps as f64;
    let mut v1 = vec![vec![0.0; grid_len]; n_types];
    let mut ups1 = vec![vec![0.0; grid_len]; n_types];
    let mut a_mid = vec![0.0; n_types];
    let mut a_now = vec![0.0; n_types];
    let mut a_next = vec![0.0; n_types];
    for j in 0..n_types {
        let ctx = ValueTermContext {
            types: &types,
            market,
            lambda_hat: game.lambda_hat,
            eta_hat: game.eta_hat,
            idio: &idio,
            j,
        };
        let rs = &riccati[riccati_of_type[j]];
        for g in (0..steps).rev() {
            for k in 0..n_types {
                a_now[k] = a_star[k][g];
                a_mid[k] = lerp_mid(&a_star[k], g);
                a_next[k] = a_star[k][g + 1];
            }
            let e1_mid = (market.r * (horizon - (t_grid[g] + 0.5 * h))).exp();
            let (v_lo, u_lo) = value_term_integrands(
                &ctx,
                &ValueTermInputs {
                    a: &a_now,
                    v3: rs.v3[g],
                    ups3: rs.ups3[g],
                    e1: rs.v2[g],
                },
            );
            let (v_mi, u_mi) = value_term_integrands(
                &ctx,
                &ValueTermInputs {
                    a: &a_mid,
                    v3: lerp_mid(&rs.v3, g),
                    ups3: lerp_mid(&rs.ups3, g),
                    e1: e1_mid,
                },
            );
            let (v_hi, u_hi) = value_term_integrands(
                &ctx,
                &ValueTermInputs {
                    a: &a_next,
                    v3: rs.v3[g + 1],
                    ups3: rs.ups3[g + 1],
                    e1: rs.v2[g + 1],
                },
            );
            v1[j][g] = v1[j][g + 1] + h / 6.0 * (v_lo + 4.0 * v_mi + v_hi);
            ups1[j][g] = ups1[j][g + 1] + h / 6.0 * (u_lo + 4.0 * u_mi + u_hi);
        }
    }

    let ell_sup = ell
        .iter()
        .map(|row| row.iter().fold(0.0_f64, |m, &v| m.max(v.abs())))
        .collect();

    Ok(GameSolution {
        game: game.clone(),
        market: *market,
        types,
        t_grid,
        riccati,
        existence,
        riccati_of_type,
        srqp,
        ell,
        ell_myopic,
        ell_hedge,
        ell_comp_myopic,
        ell_comp_hedge,
        a_unconstrained,
        a_star,
        phi_coeff,
        chi_coeff,
        phi_tilde,
        vartheta_self,
        vartheta_cross,
        v1,
        ups1,
        max_fixed_point_residual: max_residual,
        max_fixed_point_iterations: max_iterations,
        ell_sup,
    })
}

fn srqp_row(srqp: &[Vec<SrqpCoefficients>], g: usize) -> Vec<SrqpCoefficients> {
    srqp.iter().map(|row| row[g]).collect()
}
