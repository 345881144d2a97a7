//! Market, insurer, and game-level model primitives.
//!
//! The financial side is a 4/2 stochastic volatility market: cash at rate `r`
//! and one stock with instantaneous volatility `Σ(t) = a√Z + b/√Z`, where `Z`
//! is a CIR factor. The insurance side approximates each insurer's compound
//! Poisson surplus by a drifted Brownian motion with a common-shock component
//! (intensity `lambda_hat`) shared across insurers and an idiosyncratic
//! component per insurer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the financial market: 4/2 volatility structure plus the CIR
/// factor driving it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketParams {
    /// Risk-free rate (per year, >= 0).
    pub r: f64,
    /// Market price of risk scale: the stock drift is `r + m(aZ + b)`.
    pub m: f64,
    /// Volatility slope: coefficient of `√Z` in `Σ`.
    pub a: f64,
    /// Volatility intercept: coefficient of `1/√Z` in `Σ`.
    pub b: f64,
    /// CIR mean-reversion speed (per year, > 0).
    pub kappa: f64,
    /// CIR long-run mean (> 0 for the Feller condition to be satisfiable).
    pub z_bar: f64,
    /// CIR vol-of-vol (> 0).
    pub nu: f64,
    /// Correlation between the stock shock and the factor shock, in [-1, 1].
    pub rho: f64,
    /// Initial factor level (> 0).
    pub z0: f64,
}

impl MarketParams {
    /// `2 kappa z_bar - nu^2`; strictly positive iff the Feller condition holds.
    pub fn feller_margin(&self) -> f64 {
        2.0 * self.kappa * self.z_bar - self.nu * self.nu
    }

    /// Parameter-domain problems that make the market ill-posed, one message each.
    pub fn issues(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.r >= 0.0) {
            out.push(format!("r = {} must be >= 0", self.r));
        }
        if !(self.a >= 0.0) || !(self.b >= 0.0) {
            out.push(format!("a = {}, b = {} must both be >= 0", self.a, self.b));
        }
        if self.a == 0.0 && self.b == 0.0 {
            out.push("a and b must not both be zero".to_string());
        }
        if !(self.kappa > 0.0) {
            out.push(format!("kappa = {} must be > 0", self.kappa));
        }
        if !(self.nu > 0.0) {
            out.push(format!("nu = {} must be > 0", self.nu));
        }
        if !(self.z_bar > 0.0) {
            out.push(format!("z_bar = {} must be > 0", self.z_bar));
        }
        if !(self.z0 > 0.0) {
            out.push(format!("z0 = {} must be > 0", self.z0));
        }
        if !(-1.0..=1.0).contains(&self.rho) {
            out.push(format!("rho = {} must lie in [-1, 1]", self.rho));
        }
        out
    }
}

/// The type vector of one insurer: initial surplus, claim-arrival and claim-size
/// moments, safety loading, competition weight, risk aversion, and ambiguity
/// aversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InsurerType {
    /// Initial surplus (>= 0).
    pub x0: f64,
    /// Idiosyncratic claim intensity (per year, > 0).
    pub lambda: f64,
    /// First claim-size moment E[Y] (> 0).
    pub mu1: f64,
    /// Second claim-size moment E[Y^2] (>= mu1^2).
    pub mu2: f64,
    /// Insurer safety loading (> 0) under the expected-value premium principle.
    pub eta: f64,
    /// Competition weight in [0, 1]: weight on the market-average wealth in the
    /// relative-performance objective.
    pub theta: f64,
    /// Risk aversion (> 0) of the mean-variance criterion.
    pub delta: f64,
    /// Ambiguity aversion (> 0): scales the entropic penalty of the adversary.
    pub psi: f64,
}

impl InsurerType {
    /// Idiosyncratic claim variance rate `(lambda_hat + lambda) mu2 - lambda_hat mu1^2`.
    /// Must be positive for the diffusion approximation to be well defined.
    pub fn idiosyncratic_variance(&self, lambda_hat: f64) -> f64 {
        (lambda_hat + self.lambda) * self.mu2 - lambda_hat * self.mu1 * self.mu1
    }

    /// Parameter-domain problems for this insurer given the game's common-shock
    /// intensity, one message each.
    pub fn issues(&self, lambda_hat: f64) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.x0 >= 0.0) {
            out.push(format!("x0 = {} must be >= 0", self.x0));
        }
        if !(self.lambda > 0.0) {
            out.push(format!("lambda = {} must be > 0", self.lambda));
        }
        if !(self.mu1 > 0.0) {
            out.push(format!("mu1 = {} must be > 0", self.mu1));
        }
        if !(self.mu2 >= self.mu1 * self.mu1) {
            out.push(format!(
                "mu2 = {} must be >= mu1^2 = {}",
                self.mu2,
                self.mu1 * self.mu1
            ));
        }
        if !(self.eta > 0.0) {
            out.push(format!("eta = {} must be > 0", self.eta));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            out.push(format!("theta = {} must lie in [0, 1]", self.theta));
        }
        if !(self.delta > 0.0) {
            out.push(format!("delta = {} must be > 0", self.delta));
        }
        if !(self.psi > 0.0) {
            out.push(format!("psi = {} must be > 0", self.psi));
        }
        let v = self.idiosyncratic_variance(lambda_hat);
        if !(v > 0.0) {
            out.push(format!(
                "idiosyncratic claim variance (lambda_hat + lambda) mu2 - lambda_hat mu1^2 = {v} must be > 0"
            ));
        }
        out
    }
}

/// Game-level configuration: horizon, common-shock intensity, reinsurer
/// loading, and the roster of insurers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameConfig {
    /// Terminal time T in years (> 0).
    pub horizon_t: f64,
    /// Common-shock claim intensity shared by all insurers (>= 0, per year).
    pub lambda_hat: f64,
    /// Reinsurer safety loading (> 0) under the variance premium principle.
    pub eta_hat: f64,
    /// Ordered list of insurers (n >= 1).
    pub insurers: Vec<InsurerType>,
}

impl GameConfig {
    pub fn n(&self) -> usize {
        self.insurers.len()
    }

    /// `n - sum_k theta_k`: must be nonzero for the n-insurer equilibrium to exist.
    pub fn competition_margin(&self) -> f64 {
        self.n() as f64 - self.insurers.iter().map(|u| u.theta).sum::<f64>()
    }
}

/// Diffusion approximation of one insurer's surplus: drift and the two
/// volatility channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionApproximation {
    /// Surplus drift `eta (lambda + lambda_hat) mu1`.
    pub surplus_drift: f64,
    /// Volatility loading on the common-shock Brownian motion: `sqrt(lambda_hat) mu1`.
    pub common_vol: f64,
    /// Volatility loading on the idiosyncratic Brownian motion:
    /// `sqrt((lambda_hat + lambda) mu2 - lambda_hat mu1^2)`.
    pub idio_vol: f64,
}

/// Brownian approximation of the compound Poisson surplus of `insurer` under
/// common-shock intensity `lambda_hat`.
pub fn diffusion_approximation(
    insurer: &InsurerType,
    lambda_hat: f64,
) -> Result<DiffusionApproximation> {
    let var = insurer.idiosyncratic_variance(lambda_hat);
    if var < 0.0 {
        return Err(Error::Domain(format!(
            "idiosyncratic claim variance is negative: {var}"
        )));
    }
    Ok(DiffusionApproximation {
        surplus_drift: insurer.eta * (insurer.lambda + lambda_hat) * insurer.mu1,
        common_vol: lambda_hat.sqrt() * insurer.mu1,
        idio_vol: var.sqrt(),
    })
}

/// Correlation between the surplus shocks of two insurers induced by the
/// common claim stream:
/// `lambda_hat mu_i1 mu_k1 / sqrt((lambda_hat+lambda_i)(lambda_hat+lambda_k) mu_i2 mu_k2)`.
pub fn pairwise_claim_correlation(
    i: &InsurerType,
    k: &InsurerType,
    lambda_hat: f64,
) -> Result<f64> {
    let denom_sq = (lambda_hat + i.lambda) * (lambda_hat + k.lambda) * i.mu2 * k.mu2;
    if denom_sq <= 0.0 {
        return Err(Error::Domain(format!(
            "claim correlation denominator is not positive: {denom_sq}"
        )));
    }
    Ok(lambda_hat * i.mu1 * k.mu1 / denom_sq.sqrt())
}

/// Instantaneous stock volatility `a sqrt(z) + b / sqrt(z)` at factor level `z > 0`.
pub fn volatility(z: f64, market: &MarketParams) -> Result<f64> {
    if !(z > 0.0) {
        return Err(Error::Domain(format!("factor level z = {z} must be > 0")));
    }
    let s = z.sqrt();
    Ok(market.a * s + market.b / s)
}

/// Premium rate under the expected-value principle: `(1 + eta)(lambda + lambda_hat) mu1`.
pub fn premium_rate(insurer: &InsurerType, lambda_hat: f64) -> f64 {
    (1.0 + insurer.eta) * (insurer.lambda + lambda_hat) * insurer.mu1
}

/// Reinsurance premium rate for retained proportion `a_prop` under the variance
/// principle:
/// `(1 - a)(lambda + lambda_hat) mu1 + eta_hat (1 - a)^2 (lambda + lambda_hat) mu2`.
///
/// The first term carries `mu1` so the premium is consistent with the surplus
/// drift `eta (lambda + lambda_hat) mu1 - eta_hat (1 - a)^2 (lambda + lambda_hat) mu2`.
pub fn reinsurance_premium_rate(
    insurer: &InsurerType,
    a_prop: f64,
    lambda_hat: f64,
    eta_hat: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&a_prop) {
        return Err(Error::Range(format!(
            "retained proportion a = {a_prop} must lie in [0, 1]"
        )));
    }
    let ceded = 1.0 - a_prop;
    let rate = insurer.lambda + lambda_hat;
    Ok(ceded * rate * insurer.mu1 + eta_hat * ceded * ceded * rate * insurer.mu2)
}

/// One named validity check with its outcome.
#[derive(Debug, Clone, Serialize)]
pub struct ValidityCheck {
    /// Short stable identifier, e.g. `feller` or `moments[2]`.
    pub name: String,
    pub passed: bool,
    /// Hard checks can never be bypassed (Feller, degenerate competition).
    pub hard: bool,
    /// Measured values backing the verdict.
    pub detail: String,
}

/// Outcome of [`validate_game`]: a structured list of named checks.
#[derive(Debug, Clone, Serialize)]
pub struct ValidityReport {
    pub checks: Vec<ValidityCheck>,
}

impl ValidityReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Hard failures that block computation regardless of any force flag.
    pub fn hard_failures(&self) -> Vec<&ValidityCheck> {
        self.checks.iter().filter(|c| c.hard && !c.passed).collect()
    }

    /// Soft failures: bypassable with an explicit force flag.
    pub fn soft_failures(&self) -> Vec<&ValidityCheck> {
        self.checks
            .iter()
            .filter(|c| !c.hard && !c.passed)
            .collect()
    }
}

/// Run the game-level validity checks: the Feller condition, market parameter
/// domains, per-insurer parameter domains and moment constraints, and the
/// competition non-degeneracy `n != sum theta_k`.
pub fn validate_game(config: &GameConfig, market: &MarketParams) -> ValidityReport {
    let mut checks = Vec::new();

    let feller = market.feller_margin();
    checks.push(ValidityCheck {
        name: "feller".to_string(),
        passed: feller > 0.0,
        hard: true,
        detail: format!(
            "2 kappa z_bar = {} vs nu^2 = {}",
            2.0 * market.kappa * market.z_bar,
            market.nu * market.nu
        ),
    });

    let market_issues = market.issues();
    checks.push(ValidityCheck {
        name: "market".to_string(),
        passed: market_issues.is_empty(),
        hard: false,
        detail: if market_issues.is_empty() {
            "parameter domains ok".to_string()
        } else {
            market_issues.join("; ")
        },
    });

    checks.push(ValidityCheck {
        name: "horizon".to_string(),
        passed: config.horizon_t > 0.0 && config.lambda_hat >= 0.0 && config.eta_hat > 0.0,
        hard: false,
        detail: format!(
            "T = {}, lambda_hat = {}, eta_hat = {}",
            config.horizon_t, config.lambda_hat, config.eta_hat
        ),
    });

    for (k, insurer) in config.insurers.iter().enumerate() {
        let issues = insurer.issues(config.lambda_hat);
        checks.push(ValidityCheck {
            name: format!("moments[{}]", k + 1),
            passed: issues.is_empty(),
            hard: false,
            detail: if issues.is_empty() {
                format!(
                    "idiosyncratic variance = {}",
                    insurer.idiosyncratic_variance(config.lambda_hat)
                )
            } else {
                issues.join("; ")
            },
        });
    }

    let margin = config.competition_margin();
    checks.push(ValidityCheck {
        name: "competition".to_string(),
        passed: config.n() >= 1 && margin != 0.0,
        hard: true,
        detail: format!("n - sum theta_k = {margin}"),
    });

    ValidityReport { checks }
}
