//! Shared fixtures and independent numerical oracles for the integration
//! suites. Everything here deliberately avoids the library's own solver
//! paths: the Riccati right-hand side is rebuilt from the displayed scalar
//! coefficients, integration uses an adaptive Cash-Karp embedded pair, and
//! the reinsurance fixed points are solved by bisection on their scalar
//! aggregates with exact clamp handling.

#![allow(dead_code)]

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

pub fn insurer_one() -> InsurerType {
    InsurerType {
        x0: 1.0,
        lambda: 0.9,
        mu1: 1.0,
        mu2: 2.0,
        eta: 0.2,
        theta: 0.7,
        delta: 2.0,
        psi: 5.0,
    }
}

pub fn insurer_two() -> InsurerType {
    InsurerType {
        x0: 1.0,
        lambda: 2.4,
        mu1: 0.5,
        mu2: 0.5,
        eta: 0.2,
        theta: 0.7,
        delta: 3.0,
        psi: 7.0,
    }
}

pub fn game_baseline() -> GameConfig {
    GameConfig {
        horizon_t: 5.0,
        lambda_hat: 0.6,
        eta_hat: 0.25,
        insurers: vec![insurer_one(), insurer_two()],
    }
}

/// Calendar-clock polynomial coefficients of the coupled slope pair,
/// assembled directly from the displayed scalar system (not through the
/// library's matrix builder).
pub struct ScalarPair {
    a1: f64,
    b1: f64,
    c1: f64,
    d1: f64,
    e1: f64,
    f1: f64,
    a2: f64,
    b2: f64,
    c2: f64,
    d2: f64,
    e2: f64,
    f2: f64,
}

impl ScalarPair {
    pub fn new(market: &MarketParams, delta: f64, psi: f64) -> ScalarPair {
        let (nu, rho, kappa, m) = (market.nu, market.rho, market.kappa, market.m);
        let s = psi + delta;
        let s2 = s * s;
        let nu2 = nu * nu;
        let r2 = rho * rho;
        ScalarPair {
            a1: 0.5 * nu2 * (r2 * psi * delta / s + (1.0 - r2) * psi),
            b1: kappa + m * nu * rho * psi / s,
            c1: -nu2 * r2 * psi * delta / s,
            d1: m * nu * rho * delta / s,
            e1: 0.5 * nu2 * delta * (1.0 - r2 * delta / s),
            f1: -m * m / (2.0 * s),
            a2: -nu2 * r2 * delta * psi / s2,
            b2: kappa + m * nu * rho * (delta * delta + psi * psi) / s2,
            c2: nu2 * (r2 * 2.0 * psi * psi * delta / s2 + (1.0 - r2) * psi),
            d2: m * nu * rho * 2.0 * psi * delta / s2,
            e2: -nu2 * r2 * psi * psi * delta / s2,
            f2: -delta * m * m / s2,
        }
    }

    /// Elapsed-clock derivative (`tau = T - t`), i.e. the negative of the
    /// calendar-clock right-hand side.
    pub fn rhs_tau(&self, v: f64, u: f64) -> (f64, f64) {
        let dv_dt = self.a1 * v * v
            + self.b1 * v
            + self.c1 * v * u
            + self.d1 * u
            + self.e1 * u * u
            + self.f1;
        let du_dt = self.a2 * u * u
            + self.b2 * u
            + self.c2 * v * u
            + self.d2 * v
            + self.e2 * v * v
            + self.f2;
        (-dv_dt, -du_dt)
    }
}

/// Adaptive Cash-Karp RK4(5) integration of a two-state autonomous system
/// from `y0` over an interval of length `len`, to the given relative and
/// absolute tolerances.
pub fn integrate_cash_karp<F>(f: F, y0: (f64, f64), len: f64, rtol: f64, atol: f64) -> (f64, f64)
where
    F: Fn(f64, f64) -> (f64, f64),
{
    const B21: f64 = 0.2;
    const B31: f64 = 3.0 / 40.0;
    const B32: f64 = 9.0 / 40.0;
    const B41: f64 = 0.3;
    const B42: f64 = -0.9;
    const B43: f64 = 1.2;
    const B51: f64 = -11.0 / 54.0;
    const B52: f64 = 2.5;
    const B53: f64 = -70.0 / 27.0;
    const B54: f64 = 35.0 / 27.0;
    const B61: f64 = 1631.0 / 55296.0;
    const B62: f64 = 175.0 / 512.0;
    const B63: f64 = 575.0 / 13824.0;
    const B64: f64 = 44275.0 / 110592.0;
    const B65: f64 = 253.0 / 4096.0;
    const C1: f64 = 37.0 / 378.0;
    const C3: f64 = 250.0 / 621.0;
    const C4: f64 = 125.0 / 594.0;
    const C6: f64 = 512.0 / 1771.0;
    const D1: f64 = C1 - 2825.0 / 27648.0;
    const D3: f64 = C3 - 18575.0 / 48384.0;
    const D4: f64 = C4 - 13525.0 / 55296.0;
    const D5: f64 = -277.0 / 14336.0;
    const D6: f64 = C6 - 0.25;

    let mut t = 0.0_f64;
    let mut y = y0;
    let mut h = len / 64.0;
    let mut guard = 0usize;
    while t < len {
        guard += 1;
        assert!(guard < 10_000_000, "adaptive integrator failed to advance");
        if t + h > len {
            h = len - t;
        }
        let k1 = f(y.0, y.1);
        let k2 = f(y.0 + h * B21 * k1.0, y.1 + h * B21 * k1.1);
        let k3 = f(
            y.0 + h * (B31 * k1.0 + B32 * k2.0),
            y.1 + h * (B31 * k1.1 + B32 * k2.1),
        );
        let k4 = f(
            y.0 + h * (B41 * k1.0 + B42 * k2.0 + B43 * k3.0),
            y.1 + h * (B41 * k1.1 + B42 * k2.1 + B43 * k3.1),
        );
        let k5 = f(
            y.0 + h * (B51 * k1.0 + B52 * k2.0 + B53 * k3.0 + B54 * k4.0),
            y.1 + h * (B51 * k1.1 + B52 * k2.1 + B53 * k3.1 + B54 * k4.1),
        );
        let k6 = f(
            y.0 + h * (B61 * k1.0 + B62 * k2.0 + B63 * k3.0 + B64 * k4.0 + B65 * k5.0),
            y.1 + h * (B61 * k1.1 + B62 * k2.1 + B63 * k3.1 + B64 * k4.1 + B65 * k5.1),
        );
        let y5 = (
            y.0 + h * (C1 * k1.0 + C3 * k3.0 + C4 * k4.0 + C6 * k6.0),
            y.1 + h * (C1 * k1.1 + C3 * k3.1 + C4 * k4.1 + C6 * k6.1),
        );
        let err = (
            h * (D1 * k1.0 + D3 * k3.0 + D4 * k4.0 + D5 * k5.0 + D6 * k6.0),
            h * (D1 * k1.1 + D3 * k3.1 + D4 * k4.1 + D5 * k5.1 + D6 * k6.1),
        );
        let scale0 = atol + rtol * y5.0.abs().max(y.0.abs());
        let scale1 = atol + rtol * y5.1.abs().max(y.1.abs());
        let ratio = (err.0 / scale0).abs().max((err.1 / scale1).abs());
        if ratio <= 1.0 {
            t += h;
            y = y5;
        }
        let factor = if ratio > 0.0 {
            0.9 * ratio.powf(-0.2)
        } else {
            5.0
        };
        h *= factor.clamp(0.2, 5.0);
    }
    y
}

/// Reinsurance fixed point by bisection on the scalar retained-exposure
/// aggregate `s = (1/n) sum_k mu_k1 a_k`, treating the clamp exactly: given
/// `s`, insurer `i`'s proportion is `min((Q_i s + P_i) / (R_i + Q_i mu_i1 / n), 1)`.
/// `srqp` rows are `(q, r, p)` per distinct type.
pub fn fixed_point_by_bisection(
    srqp: &[(f64, f64, f64)],
    mu1: &[f64],
    counts: &[usize],
    n: usize,
) -> Vec<f64> {
    let nf = n as f64;
    let a_of = |s: f64| -> Vec<f64> {
        srqp.iter()
            .zip(mu1)
            .map(|(&(q, r, p), &m1)| ((q * s + p) / (r + q * m1 / nf)).min(1.0))
            .collect()
    };
    let g = |s: f64| -> f64 {
        a_of(s)
            .iter()
            .zip(mu1)
            .zip(counts)
            .map(|((&a, &m1), &c)| c as f64 * m1 * a / nf)
            .sum()
    };
    let mut lo = 0.0_f64;
    let mut hi = mu1
        .iter()
        .zip(counts)
        .map(|(&m1, &c)| c as f64 * m1 / nf)
        .sum::<f64>()
        + 1.0;
    assert!(g(lo) >= lo && g(hi) <= hi, "aggregate root not bracketed");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) >= mid {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    a_of(0.5 * (lo + hi))
}

/// Mean-field retained-exposure aggregate by bisection with exact clamps:
/// solves `Omega = sum_atoms w mu1 min((Q/R) Omega + P/R, 1)`.
pub fn omega_bar_by_bisection(srqp: &[(f64, f64, f64)], mu1: &[f64], weights: &[f64]) -> f64 {
    let g = |omega: f64| -> f64 {
        srqp.iter()
            .zip(mu1)
            .zip(weights)
            .map(|((&(q, r, p), &m1), &w)| w * m1 * ((q / r * omega + p / r).min(1.0)))
            .sum()
    };
    let mut lo = 0.0_f64;
    let mut hi = mu1.iter().zip(weights).map(|(&m1, &w)| w * m1).sum::<f64>() + 1.0;
    assert!(g(lo) >= lo && g(hi) <= hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) >= mid {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
