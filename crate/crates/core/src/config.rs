//! JSON configuration ingestion.
//!
//! A single document carries the market, the game, the insurer roster, and
//! numerical settings under the top-level keys `market`, `game`, `insurers`,
//! and `numerics`. All numbers are IEEE-754 doubles in decimal notation.
//! Unknown keys are rejected with an error naming the key.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GameConfig, InsurerType, MarketParams};

/// Numerical settings. Every field has a default so `numerics` may be omitted
/// or given partially.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsConfig {
    /// Uniform RK4 intervals over [0, T] for the value-function ODE grid.
    pub steps: usize,
    /// Fixed-point residual tolerance.
    pub tol: f64,
    /// Fixed-point iteration cap.
    pub max_iter: usize,
    /// Monte Carlo path count.
    pub paths: usize,
    /// Monte Carlo step size in years; defaults to T/1000 when absent.
    pub dt: Option<f64>,
    /// Master seed for the per-(path, channel) random streams.
    pub seed: u64,
    /// Memory guard: maximum number of f64 cells any one simulation may store.
    pub max_cells: usize,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        NumericsConfig {
            steps: 10_000,
            tol: 1e-12,
            max_iter: 10_000,
            paths: 100_000,
            dt: None,
            seed: 1,
            max_cells: 200_000_000,
        }
    }
}

impl NumericsConfig {
    /// Simulation step size: explicit `dt` if set, otherwise T/1000.
    pub fn dt_or_default(&self, horizon_t: f64) -> f64 {
        self.dt.unwrap_or(1e-3 * horizon_t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GameSection {
    horizon_t: f64,
    lambda_hat: f64,
    eta_hat: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDoc {
    market: MarketParams,
    game: GameSection,
    insurers: Vec<InsurerType>,
    #[serde(default)]
    numerics: NumericsConfig,
}

/// Fully parsed configuration document.
#[derive(Debug, Clone)]
pub struct Config {
    pub market: MarketParams,
    pub game: GameConfig,
    pub numerics: NumericsConfig,
}

/// Parse a configuration document from JSON text.
pub fn parse_config(text: &str) -> Result<Config> {
    let doc: ConfigDoc =
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
    if doc.insurers.is_empty() {
        return Err(Error::Config("insurers array must not be empty".into()));
    }
    Ok(Config {
        market: doc.market,
        game: GameConfig {
            horizon_t: doc.game.horizon_t,
            lambda_hat: doc.game.lambda_hat,
            eta_hat: doc.game.eta_hat,
            insurers: doc.insurers,
        },
        numerics: doc.numerics,
    })
}

/// Read and parse a configuration file.
pub fn load_config(path: &std::path::Path) -> Result<Config> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}
