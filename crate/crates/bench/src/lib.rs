//! Shared fixtures for the benchmark suite.

use riskgame::{GameConfig, InsurerType, MarketParams};

pub fn market_baseline() -> MarketParams {
    MarketParams {
        r: 0.02,
        m: 2.9428,
        a: 0.9051,
        b: 0.0023,
        kappa: 7.3479,
        z_bar: 0.04,
        nu: 0.6612,
        rho: -0.7689,
        z0: 0.04,
    }
}

pub fn game_baseline() -> GameConfig {
    GameConfig {
        horizon_t: 5.0,
        lambda_hat: 0.6,
        eta_hat: 0.25,
        insurers: vec![
            InsurerType {
                x0: 1.0,
                lambda: 0.9,
                mu1: 1.0,
                mu2: 2.0,
                eta: 0.2,
                theta: 0.7,
                delta: 2.0,
                psi: 5.0,
            },
            InsurerType {
                x0: 1.0,
                lambda: 2.4,
                mu1: 0.5,
                mu2: 0.5,
                eta: 0.2,
                theta: 0.7,
                delta: 3.0,
                psi: 7.0,
            },
        ],
    }
}
