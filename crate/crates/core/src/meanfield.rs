//! Mean-field limit of the insurer game over a type distribution.
//!
//! A representative insurer of type `U` best-responds to two population
//! aggregates: the mean investment signal `M1(t) = E[S_U(t)]` and the mean
//! retained exposure `Omega_bar(t) = E[mu1 a*_U(t)]`. The aggregates are
//! fixed points over the (finite, weighted-atom) type distribution; the
//! retained-exposure map is clamped and iterated monotonically from its
//! unclamped solution, mirroring the finite-n construction.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::equilibrium::{solve_game, srqp_at, GameSolution, SolveOptions, SrqpCoefficients};
use crate::error::{Error, Result};
use crate::model::{GameConfig, InsurerType, MarketParams};
use crate::riccati::{
    build_coefficients, existence_check, solve_riccati, uniform_grid, ExistenceReport,
    RiccatiSolution,
};

/// Weighted atoms over insurer types. Weights are strictly positive and sum
/// to one within 1e-12.
#[derive(Debug, Clone)]
pub struct TypeDistribution {
    pub atoms: Vec<(InsurerType, f64)>,
}

impl TypeDistribution {
    pub fn new(atoms: Vec<(InsurerType, f64)>) -> Result<TypeDistribution> {
        if atoms.is_empty() {
            return Err(Error::Config(
                "type distribution needs at least one atom".into(),
            ));
        }
        if atoms.iter().any(|&(_, w)| !(w > 0.0)) {
            return Err(Error::Config("atom weights must be > 0".into()));
        }
        let total: f64 = atoms.iter().map(|&(_, w)| w).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "atom weights sum to {total}, expected 1 within 1e-12"
            )));
        }
        Ok(TypeDistribution { atoms })
    }

    /// Equal-weight distribution over the given types.
    pub fn uniform(types: Vec<InsurerType>) -> Result<TypeDistribution> {
        let w = 1.0 / types.len() as f64;
        let n = types.len();
        let mut atoms: Vec<(InsurerType, f64)> = types.into_iter().map(|t| (t, w)).collect();
        // Make the weights sum to exactly one regardless of 1/n rounding.
        if let Some(last) = atoms.last_mut() {
            last.1 = 1.0 - w * (n - 1) as f64;
        }
        TypeDistribution::new(atoms)
    }

    pub fn mean_theta(&self) -> f64 {
        self.atoms.iter().map(|(u, w)| u.theta * w).sum()
    }

    /// Draw `n` atom indices i.i.d. from the weights.
    pub fn sample_indices(&self, n: usize, seed: u64) -> Vec<usize> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (idx, &(_, w)) in self.atoms.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        return idx;
                    }
                }
                self.atoms.len() - 1
            })
            .collect()
    }
}

/// Mean-field equilibrium on a uniform grid; per-atom arrays are `[atom][grid]`.
#[derive(Debug, Clone)]
pub struct MeanFieldEquilibrium {
    pub t_grid: Vec<f64>,
    pub atoms: Vec<(InsurerType, f64)>,
    /// Aggregate investment signal `M1(t) = E[S_U(t)]`.
    pub m1: Vec<f64>,
    /// Aggregate retained exposure `Omega_bar(t) = E[mu1 a*_U(t)]`, stored as
    /// the exact weighted sum of the returned proportions.
    pub omega_bar: Vec<f64>,
    pub ell: Vec<Vec<f64>>,
    pub a_star: Vec<Vec<f64>>,
    pub phi_coeff: Vec<Vec<f64>>,
    pub chi_coeff: Vec<Vec<f64>>,
    pub phi_tilde: Vec<Vec<f64>>,
    /// Own-channel idiosyncratic distortion; cross-channel distortions vanish
    /// in the mean-field limit.
    pub vartheta_self: Vec<Vec<f64>>,
    /// One Riccati solution per distinct `(delta, psi)`.
    pub riccati: Vec<RiccatiSolution>,
    pub existence: Vec<ExistenceReport>,
    pub riccati_of_atom: Vec<usize>,
}

/// Solve the mean-field equilibrium for a type distribution.
#[allow(clippy::too_many_arguments)]
pub fn mean_field_solve(
    dist: &TypeDistribution,
    market: &MarketParams,
    lambda_hat: f64,
    eta_hat: f64,
    horizon: f64,
    steps: usize,
    tol: f64,
    max_iter: usize,
) -> Result<MeanFieldEquilibrium> {
    let theta_bar = dist.mean_theta();
    if theta_bar == 1.0 {
        return Err(Error::DegenerateMeanField);
    }

    let t_grid = uniform_grid(horizon, steps);
    let n_atoms = dist.atoms.len();

    // Riccati solve per distinct (delta, psi); the coefficient matrices of the
    // representative insurer coincide with the finite-n ones.
    let mut riccati: Vec<RiccatiSolution> = Vec::new();
    let mut existence: Vec<ExistenceReport> = Vec::new();
    let mut keys: Vec<(u64, u64)> = Vec::new();
    let mut riccati_of_atom = Vec::with_capacity(n_atoms);
    for (u, _) in &dist.atoms {
        let key = (u.delta.to_bits(), u.psi.to_bits());
        let idx = match keys.iter().position(|&k| k == key) {
            Some(idx) => idx,
            None => {
                let coeffs = build_coefficients(u, market);
                let report = existence_check(&coeffs, u, market, horizon);
                riccati.push(solve_riccati(&coeffs, market, &report, horizon, steps)?);
                existence.push(report);
                keys.push(key);
                keys.len() - 1
            }
        };
        riccati_of_atom.push(idx);
    }

    let grid_len = steps + 1;
    let mut m1 = vec![0.0; grid_len];
    let mut omega_bar = vec![0.0; grid_len];
    let mut ell = vec![vec![0.0; grid_len]; n_atoms];
    let mut a_star = vec![vec![0.0; grid_len]; n_atoms];
    let mut phi_coeff = vec![vec![0.0; grid_len]; n_atoms];
    let mut chi_coeff = vec![vec![0.0; grid_len]; n_atoms];
    let mut phi_tilde = vec![vec![0.0; grid_len]; n_atoms];
    let mut vartheta_self = vec![vec![0.0; grid_len]; n_atoms];

    let idio: Vec<f64> = dist
        .atoms
        .iter()
        .map(|(u, _)| u.idiosyncratic_variance(lambda_hat).max(0.0).sqrt())
        .collect();

    for g in 0..grid_len {
        let t = t_grid[g];
        let e1 = riccati[0].v2[g];
        let srqp: Vec<SrqpCoefficients> = dist
            .atoms
            .iter()
            .enumerate()
            .map(|(a, (u, _))| {
                let rs = &riccati[riccati_of_atom[a]];
                srqp_at(
                    u, market, lambda_hat, eta_hat, 0.0, rs.v3[g], rs.ups3[g], e1,
                )
            })
            .collect();

        // Aggregate investment signal.
        m1[g] = srqp
            .iter()
            .zip(&dist.atoms)
            .map(|(c, &(_, w))| w * c.s)
            .sum();

        // Retained-exposure fixed point: unclamped start, monotone clamped map.
        let mean_qr: f64 = srqp
            .iter()
            .zip(&dist.atoms)
            .map(|(c, &(u, w))| w * u.mu1 * c.q / c.r)
            .sum();
        let mean_pr: f64 = srqp
            .iter()
            .zip(&dist.atoms)
            .map(|(c, &(u, w))| w * u.mu1 * c.p / c.r)
            .sum();
        if mean_qr >= 1.0 {
            return Err(Error::SingularSystem {
                t,
                denominator: 1.0 - mean_qr,
            });
        }
        let mut omega = mean_pr / (1.0 - mean_qr);
        let map = |omega: f64| -> f64 {
            srqp.iter()
                .zip(&dist.atoms)
                .map(|(c, &(u, w))| w * u.mu1 * (c.q / c.r * omega + c.p / c.r).min(1.0))
                .sum()
        };
        let mut converged = false;
        for _ in 0..max_iter {
            let next = map(omega);
            if next > omega + 1e-10 {
                return Err(Error::InvariantViolation(format!(
                    "retained-exposure iterate increased at t = {t}: {omega} -> {next}"
                )));
            }
            let done = (next - omega).abs() < tol;
            omega = next;
            if done {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NonConvergence {
                iterations: max_iter,
                residual: f64::NAN,
                tol,
            });
        }

        for (a, (u, _)) in dist.atoms.iter().enumerate() {
            let c = &srqp[a];
            let a_u = (c.q / c.r * omega + c.p / c.r).min(1.0);
            a_star[a][g] = a_u;
            ell[a][g] = c.s + u.theta * m1[g] / (1.0 - theta_bar);
        }
        // Exact self-consistency: store the weighted sum of the returned
        // proportions.
        omega_bar[g] = dist
            .atoms
            .iter()
            .enumerate()
            .map(|(a, &(u, w))| w * u.mu1 * a_star[a][g])
            .sum();

        for (a, (u, _)) in dist.atoms.iter().enumerate() {
            let rs = &riccati[riccati_of_atom[a]];
            let s_u = srqp[a].s;
            phi_coeff[a][g] = -(market.nu * market.rho * rs.v3[g] + s_u * e1) * u.psi;
            chi_coeff[a][g] =
                -market.nu * (1.0 - market.rho * market.rho).sqrt() * rs.v3[g] * u.psi;
            phi_tilde[a][g] =
                -lambda_hat.sqrt() * (u.mu1 * a_star[a][g] - u.theta * omega_bar[g]) * e1 * u.psi;
            vartheta_self[a][g] = -a_star[a][g] * idio[a] * e1 * u.psi;
        }
    }

    Ok(MeanFieldEquilibrium {
        t_grid,
        atoms: dist.atoms.clone(),
        m1,
        omega_bar,
        ell,
        a_star,
        phi_coeff,
        chi_coeff,
        phi_tilde,
        vartheta_self,
        riccati,
        existence,
        riccati_of_atom,
    })
}

/// One cell of the finite-n convergence experiment.
#[derive(Debug, Clone, Copy)]
pub struct ConvergenceCell {
    pub n: usize,
    pub seed: u64,
    /// Sup over times and sampled insurers of the investment-coefficient gap.
    pub err_ell: f64,
    /// Sup over times and sampled insurers of the retention gap.
    pub err_a: f64,
}

/// For each `n` and seed, sample `n` types i.i.d. from the distribution, solve
/// the n-insurer game, and record the sup-norm strategy gaps against the
/// mean-field equilibrium.
#[allow(clippy::too_many_arguments)]
pub fn convergence_experiment(
    dist: &TypeDistribution,
    n_list: &[usize],
    seeds: &[u64],
    market: &MarketParams,
    lambda_hat: f64,
    eta_hat: f64,
    horizon: f64,
    steps: usize,
    tol: f64,
) -> Result<Vec<ConvergenceCell>> {
    let mf = mean_field_solve(
        dist, market, lambda_hat, eta_hat, horizon, steps, tol, 10_000,
    )?;
    let mut out = Vec::with_capacity(n_list.len() * seeds.len());
    for &n in n_list {
        for &seed in seeds {
            let indices = dist.sample_indices(n, seed);
            let insurers: Vec<InsurerType> = indices.iter().map(|&a| dist.atoms[a].0).collect();
            let game = GameConfig {
                horizon_t: horizon,
                lambda_hat,
                eta_hat,
                insurers,
            };
            let opts = SolveOptions {
                steps,
                tol,
                max_iter: 10_000,
                allow_soft: false,
            };
            let sol: GameSolution = solve_game(&game, market, &opts)?;

            // Identical insurers share a type; compare one representative per
            // distinct (solution type, source atom) pair.
            let mut pairs: Vec<(usize, usize)> = Vec::new();
            for (i, &atom) in indices.iter().enumerate() {
                let ty = sol.type_of(i);
                if !pairs.contains(&(ty, atom)) {
                    pairs.push((ty, atom));
                }
            }
            let mut err_ell = 0.0_f64;
            let mut err_a = 0.0_f64;
            for &(ty, atom) in &pairs {
                for g in 0..sol.t_grid.len() {
                    err_ell = err_ell.max((sol.ell[ty][g] - mf.ell[atom][g]).abs());
                    err_a = err_a.max((sol.a_star[ty][g] - mf.a_star[atom][g]).abs());
                }
            }
            out.push(ConvergenceCell {
                n,
                seed,
                err_ell,
                err_a,
            });
        }
    }
    Ok(out)
}
